// Counts the elements strictly above a threshold.
int count_above(const int* values, int n, int threshold) {
    int count = 0;
    #pragma omp parallel for
    for (int i = 0; i < n; ++i) {
        if (values[i] > threshold) {
            #pragma omp critical
            count++;
        }
    }
    return count;
}
