"""Write Movielens 100K in its original layout (u.data, u.item, u.user).

The source is either a directory already holding the original files or the
atomic-file copy bundled with the ``recbole`` wheel (``ml-100k.inter``,
``ml-100k.item``, ``ml-100k.user``), which carries the same ratings, genres
and occupations.

    python scripts/fetch_ml100k.py --out data/ml-100k [--src DIR]
"""

import argparse
import shutil
import subprocess
import sys
import tempfile
import zipfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
from hinge.data import ML100K_GENRES  # noqa: E402


def _from_wheel(tmp: Path) -> Path:
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "recbole==1.2.1", "-d", str(tmp)],
        check=True,
    )
    whl = next(tmp.glob("recbole-*.whl"))
    with zipfile.ZipFile(whl) as z:
        for name in z.namelist():
            if "dataset_example/ml-100k/" in name:
                z.extract(name, tmp)
    return next(tmp.rglob("ml-100k.inter")).parent


def _rows(path: Path):
    with open(path, encoding="utf-8") as f:
        next(f)
        for line in f:
            line = line.rstrip("\n")
            if line:
                yield line.split("\t")


def convert(src: Path, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "u.data", "w", encoding="latin-1") as f:
        for u, i, r, t in _rows(src / "ml-100k.inter"):
            f.write(f"{u}\t{i}\t{int(float(r))}\t{int(float(t))}\n")
    lookup = {g.lower(): k for k, g in enumerate(ML100K_GENRES)}
    with open(out / "u.item", "w", encoding="latin-1") as f:
        for item_id, title, year, classes in _rows(src / "ml-100k.item"):
            flags = ["0"] * len(ML100K_GENRES)
            for g in classes.split():
                flags[lookup[g.lower()]] = "1"
            f.write("|".join([item_id, title, year, "", ""] + flags) + "\n")
    with open(out / "u.user", "w", encoding="latin-1") as f:
        for user_id, age, gender, occupation, zipc in _rows(src / "ml-100k.user"):
            f.write("|".join([user_id, age, gender, occupation, zipc]) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/ml-100k")
    ap.add_argument("--src", default=None, help="directory with original u.* files or recbole atomic files")
    args = ap.parse_args()
    out = Path(args.out)
    if args.src and (Path(args.src) / "u.data").exists():
        out.mkdir(parents=True, exist_ok=True)
        for name in ("u.data", "u.item", "u.user"):
            shutil.copy(Path(args.src) / name, out / name)
        return
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(args.src) if args.src else _from_wheel(Path(tmp))
        convert(src, out)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
