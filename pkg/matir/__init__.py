"""MatIR desk-scale hybrid Mamba-Transformer image restoration library."""
from pathlib import Path

from dotenv import load_dotenv

__version__ = "0.3.0"

# Load .env from project root (directory containing matir/) so MATIR_* settings
# are found when running from any directory.
_project_root = Path(__file__).resolve().parent.parent
load_dotenv(_project_root / ".env")
