#!/usr/bin/env python3
"""
Main entry point for the front-door estimation command line
"""
import sys
import os

# Add the current directory to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from src.app import run_cli

if __name__ == '__main__':
    sys.exit(run_cli(sys.argv[1:]))
