#!/usr/bin/env python3
"""Launch the HTTP gateway. Equivalent to the bonik-gateway console
script; handy when running from a source checkout.

    python3 scripts/run_gateway.py --listen 127.0.0.1:8080
"""
import sys

from bonik.cli import gateway_main

if __name__ == "__main__":
    sys.exit(gateway_main(sys.argv[1:]))
