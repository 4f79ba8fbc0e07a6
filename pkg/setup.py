"""
Bootstrap a permkit development checkout: install the backend requirements,
write backend/.env and run the smoke test
"""
import subprocess
import sys
from pathlib import Path

MIN_PYTHON = (3, 9)
BACKEND_DIR = Path(__file__).resolve().parent / "backend"

ENV_TEMPLATE = """# Flask Configuration
FLASK_ENV=development
PORT=5000

# Logging
LOG_LEVEL=INFO
LOG_FILE=permkit.log

# Enumeration limits
SUBGROUP_CAP=1000000
MAX_FULL_GROUP_N=8
ORACLE_MAX_N=8
ORACLE_MAX_TUPLES=1000000

# Calibration
CALIBRATION_WORKERS=1
CALIBRATION_CHUNK=5000
API_MAX_REPS=20000

# Seed used by randomized methods when none is passed (leave empty to require one)
DEFAULT_SEED=
"""

NEXT_STEPS = [
    ("Run the quick test suite", "cd backend && pytest -m 'not slow'"),
    ("Print the exact laws of the four-point example", "cd backend && python tools/example_diagnostic.py"),
    ("Close a generator file into a subgroup", "cd backend && python permkit.py group --generators gens.txt"),
    ("Start the Flask API", "cd backend && python app.py"),
]


def banner(title, width=60):
    print("\n" + "=" * width)
    print(title)
    print("=" * width)


def run_step(args, label):
    """Run one setup step inside backend/, printing ✓ or ✗"""
    print(f"\n{label}...")
    completed = subprocess.run(args, cwd=BACKEND_DIR, capture_output=True, text=True)
    if completed.returncode != 0:
        print(f"✗ {label} failed (exit {completed.returncode})")
        if completed.stderr:
            print(completed.stderr.strip())
        return False
    print(f"✓ {label}")
    if completed.stdout:
        print(completed.stdout.rstrip())
    return True


def python_ok():
    found = sys.version_info[:3]
    version = '.'.join(str(part) for part in found)
    if found[:2] < MIN_PYTHON:
        print(f"✗ Python {version} found; permkit needs {MIN_PYTHON[0]}.{MIN_PYTHON[1]}+")
        return False
    print(f"✓ Python {version}")
    return True


def write_env():
    env_path = BACKEND_DIR / ".env"
    if env_path.exists():
        print(f"✓ Keeping existing {env_path.name}")
        return
    env_path.write_text(ENV_TEMPLATE, encoding="utf-8")
    print(f"✓ Wrote default settings to backend/{env_path.name}")


def main():
    banner("PERMKIT - SETUP")
    if not python_ok():
        return 1

    banner("INSTALLING REQUIREMENTS", width=50)
    if not run_step([sys.executable, "-m", "pip", "install", "-r", "requirements.txt"], "pip install"):
        return 1
    write_env()

    banner("SMOKE TEST", width=50)
    smoke_ok = run_step([sys.executable, "simple_test.py"], "simple_test.py")

    banner("SETUP COMPLETE" if smoke_ok else "SETUP FINISHED WITH FAILURES")
    print("\nNext steps:")
    for number, (label, command) in enumerate(NEXT_STEPS, start=1):
        print(f"{number}. {label}:")
        print(f"   {command}")

    print("\n📚 Documentation:")
    print("- README.md for usage, methods and file formats")
    print("- DESIGN.md for implementation notes")

    print("\n⚠️  Important:")
    print("- Naive subset p-values are reported with a warning; they are not valid in general")
    print("- Set DEFAULT_SEED only if you want unseeded runs to be reproducible")
    print("- Logs rotate in backend/permkit.log")
    return 0 if smoke_ok else 1


if __name__ == "__main__":
    sys.exit(main())
