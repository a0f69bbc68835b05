try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

__all__ = ["tomllib", "load_toml", "loads_toml"]


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def loads_toml(text):
    return tomllib.loads(text)
