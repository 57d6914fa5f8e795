"""Object-centric scene models: procedural rendering, generative models, planning."""

try:
    from shapepose._shapepose import *  # noqa: F401,F403  (installed wheel layout)
    from shapepose._shapepose import __doc__  # noqa: F401
except ImportError:  # pragma: no cover - build-tree layout used by the test suite
    from _shapepose import *  # noqa: F401,F403
    from _shapepose import __doc__  # noqa: F401
