#!/usr/bin/env python3
"""
Run script for the label-free performance monitor
Provides the command-line interface (estimate, simulate, generate, calibrate, evaluate)
"""

import sys
from pathlib import Path

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.bench import main


if __name__ == "__main__":
    sys.exit(main())
