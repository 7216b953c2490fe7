"""Allow running snapcorr as `python3 -m snapcorr`."""
from snapcorr.cli import main

main()
