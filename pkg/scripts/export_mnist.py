"""Write the mlxtend MNIST subset as IDX files so `infogap ingest` can read it.

    python scripts/export_mnist.py data/
    infogap ingest --images data/mnist5k-images-idx3-ubyte --labels data/mnist5k-labels-idx1-ubyte --out data/
"""
import argparse

from infogap.data import export_mnist_subset

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir", nargs="?", default="data")
    img, lab = export_mnist_subset(ap.parse_args().out_dir)
    print(f"{img}\n{lab}")
