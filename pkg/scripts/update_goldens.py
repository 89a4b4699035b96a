"""Regenerate the golden CSVs for the end-to-end synthetic run.

    python scripts/update_goldens.py

Runs stats, binarize, concepts, cluster and sweep on tests/data/synthetic and
copies every CSV they write into tests/data/synthetic/goldens/. Only rerun
after a deliberate change to the pipeline's output.
"""

import shutil
import tempfile
from pathlib import Path

from crea_topics.cli import main

DATA = Path(__file__).resolve().parents[1] / "tests" / "data" / "synthetic"
STEPS = ("stats", "binarize", "concepts", "cluster", "sweep")


def run_pipeline(out: Path) -> list[Path]:
    for step in STEPS:
        code = main([step, "--config", str(DATA / "config.yaml"), "--out", str(out)])
        if code:
            raise SystemExit(f"{step} failed with exit code {code}")
    return sorted(out.glob("*.csv"))


def main_() -> None:
    golden = DATA / "goldens"
    with tempfile.TemporaryDirectory() as tmp:
        files = run_pipeline(Path(tmp))
        if golden.exists():
            shutil.rmtree(golden)
        golden.mkdir()
        for f in files:
            shutil.copy(f, golden / f.name)
    print(f"{len(files)} golden files written to {golden}")


if __name__ == "__main__":
    main_()
