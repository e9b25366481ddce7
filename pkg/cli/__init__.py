# Lumen — Command-line entry point
