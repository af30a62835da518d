import os
import pathlib
import sys

# Keep cached weights/moments out of the user's real cache, but persistent
# across test runs: the kappa=4 entries are expensive to recompute.
_CACHE = pathlib.Path(__file__).resolve().parent.parent / ".cache-tests"
os.environ.setdefault("WICKWEIGHTS_CACHE_DIR", str(_CACHE))

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent))
