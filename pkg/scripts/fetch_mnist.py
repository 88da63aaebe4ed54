"""Download the MNIST (or Fashion-MNIST) IDX files into a data directory.

Tries each known mirror in order, decompresses the gzip payloads and
validates the result by actually parsing it before moving it into
place, so a half-written or corrupted download never ends up where the
experiment runner would pick it up.  Needs network access; in an
offline environment, copy the four files in by hand instead:

    train-images-idx3-ubyte   train-labels-idx1-ubyte
    t10k-images-idx3-ubyte    t10k-labels-idx1-ubyte
"""

import argparse
import gzip
import os
import sys
import urllib.error
import urllib.request

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from spikecl.config import DATA_DIR_ENV
from spikecl.data import MNIST_FILES, load_idx_dir

MIRRORS = {
    "mnist": (
        "https://ossci-datasets.s3.amazonaws.com/mnist/",
        "https://storage.googleapis.com/cvdf-datasets/mnist/",
    ),
    "fashion": (
        "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    ),
}


def fetch_one(name, mirrors, dest, force=False):
    if os.path.exists(dest) and not force:
        print(f"  {name}: already present")
        return
    last_error = None
    for base in mirrors:
        url = f"{base}{name}.gz"
        try:
            print(f"  {name}: downloading {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                payload = gzip.decompress(response.read())
            tmp = f"{dest}.tmp.{os.getpid()}"
            with open(tmp, "wb") as f:
                f.write(payload)
            os.replace(tmp, dest)
            return
        except (urllib.error.URLError, OSError, gzip.BadGzipFile) as exc:
            last_error = exc
            print(f"  {name}: mirror failed ({exc}), trying next")
    raise SystemExit(f"all mirrors failed for {name}: {last_error}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--data-dir",
                        default=os.environ.get(DATA_DIR_ENV, "data"))
    parser.add_argument("--dataset", choices=sorted(MIRRORS),
                        default="mnist")
    parser.add_argument("--force", action="store_true",
                        help="re-download files that already exist")
    args = parser.parse_args()

    os.makedirs(args.data_dir, exist_ok=True)
    print(f"fetching {args.dataset} into {args.data_dir}/")
    for names in MNIST_FILES.values():
        for name in names:
            fetch_one(name, MIRRORS[args.dataset],
                      os.path.join(args.data_dir, name), force=args.force)

    train, test = load_idx_dir(args.data_dir)
    print(f"ok: {len(train)} training and {len(test)} test samples, "
          f"{train.dim} pixels each")


if __name__ == "__main__":
    main()
