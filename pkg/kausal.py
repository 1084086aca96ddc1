#!/usr/bin/env python3
"""
kausal - causal optimal transport toolkit

Entry script: puts src/ on the path and runs the CLI.

    python kausal.py solve --eta eta.json --nu nu.json --cost cost.json --mode causal
    python kausal.py suite --seed 42 --out reports
"""
from pathlib import Path
import sys

# src on the import path
sys.path.insert(0, str(Path(__file__).parent / 'src'))

from main import main


if __name__ == "__main__":
    main()
