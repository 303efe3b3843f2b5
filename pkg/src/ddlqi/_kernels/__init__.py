"""Numerical kernel back ends.

At import time the compiled extension is preferred; the pure-NumPy twin
is used as a transparent fallback.  Both expose the same interface:

* ``lyap_solve(a, q)`` — dense Kronecker-LU solve of ``a^T P + P a + q = 0``
* ``FlowKernel(d, ub, qa, r, nbasis)`` — projected-gradient-flow evaluator
  with ``eval_point`` and ``run_segment``

``get_backend(name)`` returns a specific back end for benchmarking and
parity tests; ``ACTIVE`` is the default one.
"""

from . import _corepy

try:  # pragma: no cover - exercised only when the extension is built
    from . import _core

    HAVE_COMPILED = True
except ImportError:  # pragma: no cover
    _core = None
    HAVE_COMPILED = False

ACTIVE = _core if HAVE_COMPILED else _corepy

OK = _corepy.OK
SINGULAR = _corepy.SINGULAR
NOT_STABLE = _corepy.NOT_STABLE
REJECTED = _corepy.REJECTED


def backend_name():
    """Name of the back end selected at import time."""
    return ACTIVE.BACKEND


def get_backend(name=None):
    """Return a kernel back end module by name.

    ``None`` returns the active default; ``"compiled"`` raises if the
    extension is not available.
    """
    if name is None:
        return ACTIVE
    if name == "python":
        return _corepy
    if name == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel back end is not available")
        return _core
    raise ValueError(f"unknown kernel back end {name!r}")


def lyap_solve(a, q):
    """Solve ``a^T P + P a + q = 0`` with the active back end."""
    return ACTIVE.lyap_solve(a, q)


def make_flow_kernel(d, ub, qa, r, nbasis, backend=None):
    """Construct a flow-kernel evaluator on the requested back end."""
    return get_backend(backend).FlowKernel(d, ub, qa, r, nbasis)
