"""Copy the bundled JSON schemas to docs/schemas."""

import shutil
from importlib import resources
from pathlib import Path

DEST = Path(__file__).resolve().parents[1] / "docs" / "schemas"


def main():
    DEST.mkdir(parents=True, exist_ok=True)
    for entry in resources.files("goldie.schemas").iterdir():
        if entry.name.endswith(".json"):
            with resources.as_file(entry) as src:
                shutil.copyfile(src, DEST / entry.name)
                print(DEST / entry.name)


if __name__ == "__main__":
    main()
