import sys
from pathlib import Path

# The exporter is a separate package in this repository; make it importable
# for the acceptance gate even before it has been pip-installed.
_exporter_src = Path(__file__).resolve().parents[1] / "exporter" / "src"
if str(_exporter_src) not in sys.path:
    sys.path.insert(0, str(_exporter_src))
