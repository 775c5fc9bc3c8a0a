#include <mpi.h>

// Folds the local state and synchronizes before the next phase.
void checkpoint(MPI_Comm comm, double* state, int n) {
    int rank;
    MPI_Comm_rank(comm, &rank);
    double local = 0.0;
    for (int i = 0; i < n; ++i) {
        local += state[i];
    }
    state[0] = local;
    MPI_Barrier(comm);
}
