"""Backend selection for the solver's inner loop.

The compiled extension is preferred; set ``RRPCP_PURE_PYTHON=1`` to force
the numpy fallback (used by the benchmark and the equivalence tests).
"""
import os

BACKEND = "python"

if os.environ.get("RRPCP_PURE_PYTHON", "") not in ("", "0"):
    from ._admm_py import admm_chunk, project_ball
else:
    try:
        from ._admm import admm_chunk, project_ball

        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._admm_py import admm_chunk, project_ball

__all__ = ["BACKEND", "admm_chunk", "project_ball"]
