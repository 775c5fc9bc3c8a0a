TEST(OpenMP_Bugs, DetectsRaceConditionOnSum) {
    // Setup: Create input data and calculate expected result sequentially
    std::vector<double> data = {1.0, 2.0, 3.0, 4.0};
    double expected_sum = 10.0;

    // Execute the parallel function multiple times
    bool is_consistent = true;
    for (int i = 0; i < 100; ++i) {
        if (parallel_sum(data.data(), data.size()) != expected_sum) {
            is_consistent = false;
            break;
        }
    }
    // The test passes if the parallel version consistently fails to produce
    // the correct result, indicating a likely race condition. A more
    // sophisticated test would use tools to detect the race directly.
    ASSERT_FALSE(is_consistent) << "Race condition not detected or function is correct.";
}
