import sys

from mfldp.cli import run

# =====================================================================
# MAIN ENTRY POINT
# =====================================================================

if __name__ == "__main__":
    # Logging goes to stderr and the log file; stdout carries the run manifest only.
    sys.exit(run(sys.argv[1:]))
