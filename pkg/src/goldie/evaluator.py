"""Serve a closed-form triple over the line-delimited JSON evaluator protocol.

    python3 -m goldie.evaluator triple.json
"""

import json
import sys

from .gge import serve, triple_from_json


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        sys.stderr.write("usage: python3 -m goldie.evaluator TRIPLE.json\n")
        return 2
    with open(argv[0]) as fh:
        triple = triple_from_json(json.load(fh))
    serve(triple)
    return 0


if __name__ == "__main__":
    sys.exit(main())
