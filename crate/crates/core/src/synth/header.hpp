// ---- hpct embedded test header ----
#ifndef HPCT_HEADER_VERSION
#define HPCT_HEADER_VERSION 1
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>
#include <unistd.h>

// exit-code contract
#define HPCT_EXIT_PASS 0
#define HPCT_EXIT_ASSERT 2
#define HPCT_EXIT_TIMEOUT 3
#define HPCT_EXIT_SETUP 4

static int hpct_rank = 0;
static int hpct_size = 1;
static int hpct_failures = 0;

static void hpct_fail(const char* file, int line, const char* what) {
    std::fprintf(stderr, "[hpct] rank %d: assertion failed at %s:%d: %s\n", hpct_rank, file, line, what);
    std::fflush(stderr);
    ++hpct_failures;
}

// Watchdog: a detached timer thread that ends the process with
// HPCT_EXIT_TIMEOUT unless the guarded work disarms it first.
#ifdef HPCT_COVERAGE
extern "C" void __gcov_dump(void);
#endif
static std::atomic<unsigned> hpct_watch_gen{0};
static std::atomic<bool> hpct_watch_armed{false};

static void hpct_watchdog_start(double seconds) {
    unsigned gen = ++hpct_watch_gen;
    hpct_watch_armed.store(true);
    std::thread([gen, seconds] {
        auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
        while (std::chrono::steady_clock::now() < deadline) {
            if (hpct_watch_gen.load() != gen || !hpct_watch_armed.load()) return;
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        if (hpct_watch_gen.load() == gen && hpct_watch_armed.load()) {
            std::fprintf(stderr, "[hpct] rank %d: timeout after %.1f s (possible deadlock)\n", hpct_rank, seconds);
            std::fflush(stderr);
#ifdef HPCT_COVERAGE
            __gcov_dump();  // keep coverage of the hang
#endif
            _exit(HPCT_EXIT_TIMEOUT);
        }
    }).detach();
}

static void hpct_watchdog_stop() { hpct_watch_armed.store(false); }

static bool hpct_close(double a, double b) {
    return std::fabs(a - b) <= 1e-9 * std::fmax(1.0, std::fabs(b));
}

#define HPCT_ASSERT_TRUE(cond) \
    do { if (!(cond)) hpct_fail(__FILE__, __LINE__, #cond); } while (0)
#define HPCT_ASSERT_EQ(a, b) \
    do { if (!((a) == (b))) hpct_fail(__FILE__, __LINE__, #a " == " #b); } while (0)
#define HPCT_ASSERT_NEAR(a, b) \
    do { if (!hpct_close((a), (b))) hpct_fail(__FILE__, __LINE__, #a " ~= " #b); } while (0)
#define HPCT_ASSERT_ON_RANK(r, cond) \
    do { if (hpct_rank == (r)) HPCT_ASSERT_TRUE(cond); } while (0)
// Runs the statement(s) under the watchdog; a hang becomes HPCT_EXIT_TIMEOUT.
#define HPCT_ASSERT_COMPLETES(seconds, ...) \
    do { hpct_watchdog_start(seconds); __VA_ARGS__; hpct_watchdog_stop(); } while (0)

static int hpct_result() { return hpct_failures ? HPCT_EXIT_ASSERT : HPCT_EXIT_PASS; }

#ifdef HPCT_USE_MPI
static int hpct_init_calls = 0;
static int hpct_finalize_calls = 0;
static int hpct_collective_calls = 0;

// Shims for the code under test: count calls, leave the real
// initialization and teardown to the test's own main.
static int hpct_shim_MPI_Init(int* argc, char*** argv) {
    ++hpct_init_calls;
    int done = 0;
    MPI_Initialized(&done);
    return done ? MPI_SUCCESS : PMPI_Init(argc, argv);
}
static int hpct_shim_MPI_Finalize() {
    ++hpct_finalize_calls;
    return MPI_SUCCESS;
}

// Worst status over all ranks, so every rank exits with the same code.
static int hpct_mpi_status() {
    int local = hpct_result(), global = 0;
    MPI_Allreduce(&local, &global, 1, MPI_INT, MPI_MAX, MPI_COMM_WORLD);
    return global;
}

#define HPCT_REQUIRE_PROCS(n) \
    do { if (hpct_size != (n)) { \
        if (hpct_rank == 0) std::fprintf(stderr, "This test requires exactly %d processes.\n", (n)); \
        PMPI_Finalize(); return HPCT_EXIT_SETUP; } } while (0)
#else
#define HPCT_REQUIRE_PROCS(n) \
    do { if ((n) != 1) { std::fprintf(stderr, "This test requires exactly %d processes.\n", (n)); \
        return HPCT_EXIT_SETUP; } } while (0)
#endif
#endif
// ---- end hpct embedded test header ----
