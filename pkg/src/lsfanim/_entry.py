"""Console entry point.

Worker thread caps (LSF_THREADS, default 1 for bit-exact runs) must reach the
BLAS libraries before numpy is imported, so this shim sets the environment
first and only then pulls in the real CLI.
"""

import os
import sys


def main() -> int:
    threads = os.environ.get("LSF_THREADS", "1")
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)
    from .cli import run

    return run(sys.argv[1:])


if __name__ == "__main__":
    raise SystemExit(main())
