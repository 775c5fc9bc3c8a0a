// Scales and shifts a vector in place.
void scale_shift(double* v, int n, double factor) {
    double tmp;
    #pragma omp parallel for
    for (int i = 0; i < n; ++i) {
        tmp = v[i] * factor;
        v[i] = tmp + 1.0;
    }
}
