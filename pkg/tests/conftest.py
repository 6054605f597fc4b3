import sys
from pathlib import Path

# make the shared scene builders importable as `scenes`
sys.path.insert(0, str(Path(__file__).parent))
