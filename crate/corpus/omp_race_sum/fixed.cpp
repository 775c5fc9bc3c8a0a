// Simplified C++ with OpenMP
double parallel_sum(double* data, int size) {
    double total = 0.0;
    #pragma omp parallel for reduction(+:total)
    for (int i = 0; i < size; ++i) {
        total += data[i];
    }
    return total;
}
