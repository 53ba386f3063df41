#!/usr/bin/env python3
"""
Standalone bound verification script.

Runs the finite- and infinite-horizon bound suites and exits 0 iff every
bound holds.
"""

import sys
from pathlib import Path

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from src.verification import standalone_verify

if __name__ == "__main__":
    standalone_verify(int(sys.argv[1]) if len(sys.argv) > 1 else None)
