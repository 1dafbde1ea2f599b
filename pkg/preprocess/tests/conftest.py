import sys
from pathlib import Path

PREPROCESS_ROOT = Path(__file__).resolve().parent.parent
REPO_ROOT = PREPROCESS_ROOT.parent
sys.path.insert(0, str(PREPROCESS_ROOT / "src"))
# The primary package is a test-time dependency only, used to check that
# preprocessor output is accepted by the downstream loader.
sys.path.insert(0, str(REPO_ROOT / "src"))

DATA_ROOT = REPO_ROOT / "data"
