// Range of a vector, with min and max searched concurrently.
double spread(const double* v, int n) {
    double lo = v[0];
    double hi = v[0];
    #pragma omp parallel sections
    {
        #pragma omp section
        {
            for (int i = 1; i < n; ++i) {
                if (v[i] < lo) { lo = v[i]; }
            }
        }
        #pragma omp section
        {
            for (int i = 1; i < n; ++i) {
                if (v[i] > hi) { hi = v[i]; }
            }
        }
    }
    return hi - lo;
}
