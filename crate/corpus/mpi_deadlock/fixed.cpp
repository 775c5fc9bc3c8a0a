// Simplified C++ with MPI: ordered exchange
void exchange_data(int rank, int partner_rank) {
    int send_buf = rank;
    int recv_buf = -1;
    // Rank 0 sends then receives; the partner receives then sends
    if (rank == 0) {
        MPI_Send(&send_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD);
        MPI_Recv(&recv_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD, MPI_STATUS_IGNORE);
    } else {
        MPI_Recv(&recv_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD, MPI_STATUS_IGNORE);
        MPI_Send(&send_buf, 1, MPI_INT, partner_rank, 0, MPI_COMM_WORLD);
    }
}
