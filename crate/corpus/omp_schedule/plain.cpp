// Triangular workload: row i costs i + 1 inner iterations.
void triangle_rows(double* out, int n) {
    #pragma omp parallel for
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j <= i % 64; ++j) {
            s += 1.0 / (j + 1);
        }
        out[i] = s;
    }
}
