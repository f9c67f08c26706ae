#!/usr/bin/env python3
"""Write the synthetic benchmark tables into data/.

Usage: python scripts/make_datasets.py [OUTPUT_DIR]
"""

import sys
from pathlib import Path

from contexture.datasets import make_planted_graph, write_benchmark_suite


def main() -> int:
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
    paths = write_benchmark_suite(out_dir)
    csv_path, adj_path, descriptor = make_planted_graph(out_dir)
    for p in paths + [csv_path, adj_path]:
        print(f"wrote {p}")
    print(f"planted context descriptor: {descriptor}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
