import sys
from pathlib import Path

# Repo root on the path so `import plots` works without installing it.
sys.path.insert(0, str(Path(__file__).resolve().parents[2]))
