#include <mpi.h>

// Sums the local contributions of every rank onto rank 0.
double global_sum(const double* local, int n) {
    int rank;
    MPI_Comm_rank(MPI_COMM_WORLD, &rank);
    double partial = 0.0;
    for (int i = 0; i < n; ++i) {
        partial += local[i];
    }
    double total = 0.0;
    if (rank != 0) {
        MPI_Reduce(&partial, &total, 1, MPI_DOUBLE, MPI_SUM, 0, MPI_COMM_WORLD);
    }
    return total;
}
