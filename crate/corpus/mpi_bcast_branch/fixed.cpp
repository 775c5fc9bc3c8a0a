#include <mpi.h>

// Root derives the configuration and shares it with everyone.
int share_config(int value) {
    int rank;
    MPI_Comm_rank(MPI_COMM_WORLD, &rank);
    int config = 0;
    if (rank == 0) {
        config = value * 2;
    }
    MPI_Bcast(&config, 1, MPI_INT, 0, MPI_COMM_WORLD);
    return config;
}
