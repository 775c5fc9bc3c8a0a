// Adds half of `base` to every element.
void add_offset(double* v, int n, double base) {
    double offset = base * 0.5;
    #pragma omp parallel for private(offset)
    for (int i = 0; i < n; ++i) {
        v[i] = v[i] + offset;
    }
}
