import os

APP_ENV = os.getenv("APP_ENV", "dev").strip().lower()

# --- Paths ---
LAB_PRESETS_DIR = os.getenv("LAB_PRESETS_DIR", "presets")
LAB_OUT_DIR = os.getenv("LAB_OUT_DIR", "runs")

# --- Runs ---
LAB_DEFAULT_SEED = int(os.getenv("LAB_DEFAULT_SEED", 1))
# Batches built ahead of the training thread
LAB_PREFETCH_DEPTH = int(os.getenv("LAB_PREFETCH_DEPTH", 4))
# BLAS threads in benchmark mode, 0 keeps the library default
LAB_BENCH_THREADS = int(os.getenv("LAB_BENCH_THREADS", 0))
LAB_EVAL_SAMPLES = int(os.getenv("LAB_EVAL_SAMPLES", 200))
