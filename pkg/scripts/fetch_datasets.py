#!/usr/bin/env python3
"""Download ISOLET, Fashion-MNIST and Cora into the layout the loaders expect.

    python scripts/fetch_datasets.py DATA_ROOT [--only isolet fmnist cora]

Afterwards point ``HDC_HWCAL_DATA`` (or ``--data.root``) at DATA_ROOT:

    DATA_ROOT/isolet/isolet1+2+3+4.data, isolet5.data
    DATA_ROOT/fmnist/{train,t10k}-{images-idx3,labels-idx1}-ubyte.gz
    DATA_ROOT/cora/cora.content, cora.cites
"""

import argparse
import io
import os
import shutil
import subprocess
import sys
import tarfile
import urllib.request
import zipfile

ISOLET_URL = "https://archive.ics.uci.edu/static/public/54/isolet.zip"
FMNIST_URL = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/"
FMNIST_FILES = ["train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
                "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"]
CORA_URL = "https://linqs-data.soe.ucsc.edu/public/lbc/cora.tgz"


def fetch(url: str) -> bytes:
    print(f"downloading {url}", file=sys.stderr)
    with urllib.request.urlopen(url, timeout=120) as resp:
        return resp.read()


def get_isolet(root: str) -> None:
    out = os.path.join(root, "isolet")
    os.makedirs(out, exist_ok=True)
    with zipfile.ZipFile(io.BytesIO(fetch(ISOLET_URL))) as zf:
        for name in zf.namelist():
            base = os.path.basename(name)
            if base.startswith("isolet") and ".data" in base:
                with zf.open(name) as src, open(os.path.join(out, base), "wb") as dst:
                    shutil.copyfileobj(src, dst)
    # the UCI archive ships Unix-compress (.Z) files; gzip can expand them
    for base in os.listdir(out):
        if base.endswith(".Z"):
            subprocess.run(["gzip", "-d", "-f", os.path.join(out, base)], check=True)


def get_fmnist(root: str) -> None:
    out = os.path.join(root, "fmnist")
    os.makedirs(out, exist_ok=True)
    for name in FMNIST_FILES:
        with open(os.path.join(out, name), "wb") as fh:
            fh.write(fetch(FMNIST_URL + name))


def get_cora(root: str) -> None:
    out = os.path.join(root, "cora")
    os.makedirs(out, exist_ok=True)
    with tarfile.open(fileobj=io.BytesIO(fetch(CORA_URL)), mode="r:gz") as tf:
        for member in tf.getmembers():
            base = os.path.basename(member.name)
            if base in ("cora.content", "cora.cites"):
                with tf.extractfile(member) as src, open(os.path.join(out, base), "wb") as dst:
                    shutil.copyfileobj(src, dst)


GETTERS = {"isolet": get_isolet, "fmnist": get_fmnist, "cora": get_cora}


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("root", help="dataset root directory")
    ap.add_argument("--only", nargs="+", choices=sorted(GETTERS), default=sorted(GETTERS))
    args = ap.parse_args()
    for name in args.only:
        GETTERS[name](args.root)
    print(f"done; export HDC_HWCAL_DATA={os.path.abspath(args.root)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
