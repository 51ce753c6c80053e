"""Bandit-guided multi-page document retrieval and answering."""

try:
    from ._mabdqa import *  # noqa: F401,F403
    from ._mabdqa import __version__  # noqa: F401
except ImportError:  # development builds keep the extension on sys.path
    from _mabdqa import *  # noqa: F401,F403
    from _mabdqa import __version__  # noqa: F401
