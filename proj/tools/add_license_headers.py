#!/usr/bin/env python3
# Copyright 2026 The MixRep Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Prepends the Apache-2.0 notice to project sources that lack it."""

import argparse
import pathlib

NOTICE = """Copyright 2026 The MixRep Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License."""

SLASH = {".cc", ".h"}
HASH = {".txt", ".conf", ".py", ".cmake"}
DIRS = ["src", "include", "tests", "tools", "configs"]


def header(prefix):
    return "".join(f"{prefix} {line}".rstrip() + "\n" for line in NOTICE.splitlines()) + "\n"


def targets(root):
    yield root / "CMakeLists.txt"
    for d in DIRS:
        for path in sorted((root / d).rglob("*")):
            if path.is_file() and (path.suffix in SLASH or path.suffix in HASH):
                yield path


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("root", nargs="?", default=pathlib.Path(__file__).resolve().parents[1],
                        type=pathlib.Path)
    args = parser.parse_args()
    changed = 0
    for path in targets(args.root):
        text = path.read_text()
        if "Licensed under the Apache License" in text:
            continue
        block = header("//" if path.suffix in SLASH else "#")
        if text.startswith("#!"):
            shebang, _, rest = text.partition("\n")
            text = shebang + "\n" + block + rest
        else:
            text = block + text
        path.write_text(text)
        changed += 1
    print(f"added notice to {changed} files")


if __name__ == "__main__":
    main()
