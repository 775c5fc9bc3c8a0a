// Simplified C++ with MPI
void exchange_data(int rank, int partner_rank) {
    int send_buf = rank;
    int recv_buf = -1;
    // Both processes try to send first
    MPI_Send(&send_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD);
    MPI_Recv(&recv_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD, MPI_STATUS_IGNORE);
    // ...
}
