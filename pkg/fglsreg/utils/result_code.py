"""
Result codes returned by the command-line entry point.

Each constant is a (exit code, message) tuple; the message prefixes the
diagnostic printed to stderr.
"""

SUCCESS = (0, "ok")

# invalid input: unreadable or malformed files, bad configuration, length mismatches
INPUT_ERROR = (2, "input error")

# well-formed input the numerics cannot handle: rank deficiency, non-PD covariance
NUMERIC_ERROR = (3, "numerical failure")
