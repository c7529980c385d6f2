#!/usr/bin/env python3
"""Download the binary covertype dataset (libsvm format) for the optional
medium-data benchmark in the acceptance suite.

Writes data/covtype.libsvm with labels mapped to {-1, +1}. Requires network
access; the benchmark test skips itself when the file is absent.
"""

import argparse
import bz2
import urllib.request
from pathlib import Path

URL = ("https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary/"
       "covtype.libsvm.binary.scale.bz2")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/covtype.libsvm")
    parser.add_argument("--url", default=URL)
    args = parser.parse_args()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    print(f"downloading {args.url} ...")
    with urllib.request.urlopen(args.url) as resp:
        blob = bz2.decompress(resp.read())
    text = blob.decode("ascii")
    # upstream labels are {1, 2}; remap to {-1, +1}
    lines = []
    for line in text.splitlines():
        if not line.strip():
            continue
        label, _, rest = line.partition(" ")
        mapped = "+1" if label == "2" else "-1"
        lines.append(mapped + " " + rest)
    out.write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {out} ({len(lines)} rows)")


if __name__ == "__main__":
    main()
