"""Run the acceptance suite and print one PASS/FAIL line per criterion."""
import pathlib
import re
import subprocess
import sys

ROOT = pathlib.Path(__file__).resolve().parents[1]

proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-s", "-p", "no:cacheprovider",
                       str(ROOT / "tests" / "test_acceptance.py")],
                      capture_output=True, text=True, cwd=ROOT)
lines = [ln for ln in proc.stdout.splitlines() if re.match(r"CRITERION \d+:", ln)]
for ln in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
    print(ln)
print(proc.stdout.strip().splitlines()[-1])
sys.exit(proc.returncode)
