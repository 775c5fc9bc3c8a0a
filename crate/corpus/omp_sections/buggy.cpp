// Range of a vector, with min and max searched concurrently.
double spread(const double* v, int n) {
    double result = 0.0;
    #pragma omp parallel sections
    {
        #pragma omp section
        {
            double lo = v[0];
            for (int i = 1; i < n; ++i) {
                if (v[i] < lo) { lo = v[i]; }
            }
            result -= lo;
        }
        #pragma omp section
        {
            double hi = v[0];
            for (int i = 1; i < n; ++i) {
                if (v[i] > hi) { hi = v[i]; }
            }
            result += hi;
        }
    }
    return result;
}
