// Weighted total of the samples.
double weighted_total(const double* w, const double* x, int n) {
    double acc = 0.0;
    #pragma omp parallel
    {
        #pragma omp for
        for (int i = 0; i < n; ++i) {
            #pragma omp atomic
            acc += w[i] * x[i];
        }
    }
    return acc;
}
