import os

# single-threaded BLAS keeps runs bitwise reproducible
for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")


def run():
    import sys

    from .cli_io.cli import main

    sys.exit(main())


if __name__ == "__main__":
    run()
