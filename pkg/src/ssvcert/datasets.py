"""Dataset files: one JSON header line, then n lines of d space-separated numbers."""
import json
from dataclasses import dataclass, field

import numpy as np

GENERATORS = ("gaussian", "rademacher", "scaled-t", "ngca-planted")


@dataclass
class Dataset:
    X: np.ndarray
    header: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def generate(kind, n, d, seed=0, df=5.0, instance="cov", **params):
    """Sample an n x d dataset. scaled-t is Student t with df degrees of
    freedom rescaled to unit variance; ngca-planted plants a hidden-direction
    instance (see lowdeg.make_instance) along a random direction."""
    rng = np.random.default_rng(seed)
    header = {"n": n, "d": d, "dtype": "float64", "seed": seed, "generator": kind}
    if kind == "gaussian":
        X = rng.standard_normal((n, d))
    elif kind == "rademacher":
        X = rng.choice([-1.0, 1.0], size=(n, d))
    elif kind == "scaled-t":
        if df <= 2:
            raise ValueError("df must exceed 2 for unit variance")
        X = rng.standard_t(df, size=(n, d)) * np.sqrt((df - 2) / df)
        header["df"] = df
    elif kind == "ngca-planted":
        from .lowdeg import make_instance
        from .robust import generate_and_corrupt
        inst = make_instance(instance, **params)
        ds = generate_and_corrupt(n, d, adversary="ngca_plant", seed=seed, instance=inst)
        X = ds.points
        header.update(instance=inst.to_dict(), direction=ds.meta["direction"])
    else:
        raise ValueError(f"unknown generator {kind!r}; choose from {', '.join(GENERATORS)}")
    return Dataset(X, header)


def dumps(ds):
    lines = [json.dumps(ds.header, sort_keys=True)]
    lines += [" ".join(repr(float(v)) for v in row) for row in ds.X]
    return "\n".join(lines) + "\n"


def save(ds, path):
    with open(path, "w") as fh:
        fh.write(dumps(ds))


def loads(text):
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty dataset file")
    header = json.loads(lines[0])
    rows = [[float(v) for v in ln.split()] for ln in lines[1:] if ln.strip()]
    X = np.array(rows, dtype=float).reshape(len(rows), header.get("d", len(rows[0]) if rows else 0))
    if "n" in header and X.shape[0] != header["n"]:
        raise ValueError(f"header says n = {header['n']} but found {X.shape[0]} rows")
    return Dataset(X, header)


def load(path):
    with open(path) as fh:
        return loads(fh.read())
