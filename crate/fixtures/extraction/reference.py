"""Reference extractor for the completion corpus in this directory.

Uses the interpreter's own parser, so it shares no code with the Rust
extractor. Prints one JSON object per sample, keyed by file name.
"""
import ast
import json
import os
import re
import sys

FENCE = re.compile(r"^ {0,3}(`{3,})\s*[\w+#.-]*\s*$")


def last_fence(text):
    block, ticks, body = None, 0, None
    for line in text.splitlines():
        if body is None:
            m = FENCE.match(line)
            if m:
                ticks, body = len(m.group(1)), []
        elif len(line.strip()) >= ticks and set(line.strip()) == {"`"}:
            block, body = "\n".join(body), None
        else:
            body.append(line)
    if body is not None:
        block = "\n".join(body)
    return block


def parses(src):
    try:
        tree = ast.parse(src)
    except SyntaxError:
        return False
    # A bare name or constant is prose that happens to parse.
    return any(not isinstance(s, ast.Expr) or isinstance(s.value, ast.Call) for s in tree.body)


def program(text):
    if not text.strip():
        return None, "empty"
    block = last_fence(text)
    if block is not None:
        return (block, "ok") if block.strip() else (None, "empty")
    lines = text.splitlines()
    for start, line in enumerate(lines):
        if line.strip() and not line[0].isspace() and parses("\n".join(lines[start:])):
            return "\n".join(lines[start:]), "ok"
    return None, "no_code_block"


def submodules(src):
    defs = [n for n in ast.parse(src).body if isinstance(n, (ast.FunctionDef, ast.AsyncFunctionDef))]
    last = {d.name: i for i, d in enumerate(defs)}
    return [d.name for i, d in enumerate(defs) if last[d.name] == i]


def main(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".md"):
            continue
        with open(os.path.join(directory, name)) as f:
            code, status = program(f.read())
        out[name] = {"parse_status": status, "names": submodules(code) if code else []}
    json.dump(out, sys.stdout, indent=1, sort_keys=True)
    print()


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else os.path.dirname(os.path.abspath(__file__)))
