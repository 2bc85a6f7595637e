"""
protlab - command-line entry point.

    protlab run --dataset toy-pbmc --out runs/pbmc
    protlab evaluate --hypotheses runs/pbmc/reports/run_hypotheses.json --paper paper.txt
"""

import os
import sys

# Provider-specific exceptions become any_llm.exceptions.* subclasses.
# Must be set before any any-llm import.
os.environ.setdefault("ANY_LLM_UNIFIED_EXCEPTIONS", "1")

import logging
from pathlib import Path

from protlab.cli.app import dispatch


def setup_logging(log_dir: Path, verbose: bool = False) -> Path:
    """Log to <out>/logs/protlab.log and stderr."""
    log_file = Path(log_dir) / "protlab.log"
    log_file.parent.mkdir(parents=True, exist_ok=True)

    # force=True: replace any root handler installed by an earlier import
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        force=True,
        handlers=[
            logging.FileHandler(log_file, mode="a", encoding="utf-8"),
            logging.StreamHandler(sys.stderr),
        ],
    )

    logging.getLogger("any_llm").setLevel(logging.WARNING)
    logging.getLogger("httpx").setLevel(logging.WARNING)
    return log_file


def main() -> None:
    sys.exit(dispatch(sys.argv[1:], setup_logging=setup_logging))


if __name__ == "__main__":
    main()
