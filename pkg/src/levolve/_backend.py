"""Select the compiled kernel extension or the pure-numpy fallback.

Set ``LEVOLVE_BACKEND=pure`` or ``LEVOLVE_BACKEND=compiled`` to force a
choice; the default (``auto``) prefers the compiled extension when built.
Both backends implement identical semantics; floating-point results can
differ in the last bits because summation orders differ.
"""

import os

from . import _kernels_py

_choice = os.environ.get("LEVOLVE_BACKEND", "auto").lower()

if _choice == "pure":
    kernels = _kernels_py
elif _choice == "compiled":
    from . import _core as kernels  # noqa: F401  (ImportError is the right failure)
else:
    try:
        from . import _core as kernels
    except ImportError:
        kernels = _kernels_py


def backend_name() -> str:
    return kernels.BACKEND
