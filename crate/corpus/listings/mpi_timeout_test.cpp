TEST(MPI_Bugs, DeadlockOnSymmetricSend) {
    // Setup: Get MPI rank and size
    int rank, size;
    MPI_Comm_rank(MPI_COMM_WORLD, &rank);
    MPI_Comm_size(MPI_COMM_WORLD, &size);
    ASSERT_EQ(size, 2) << "This test requires exactly 2 processes.";

    // This function call is expected to hang, so a test
    // would need a timeout mechanism to detect the deadlock.
    // The test *passes* if it correctly identifies the hang.
    ASSERT_TIMEOUT(exchange_data(rank, 1-rank), 5.0);
}
