#!/usr/bin/env python3
"""
Bootstrap a checkout of the ALU safety toolkit.

    python setup.py                 # install, write .env, create dirs, smoke test
    python setup.py --skip-install  # when the environment is already provisioned
"""

import argparse
import shutil
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent
MIN_PYTHON = (3, 9)


def check_interpreter(args):
    found = ".".join(str(part) for part in sys.version_info[:3])
    if sys.version_info < MIN_PYTHON:
        print(f"❌ Python {MIN_PYTHON[0]}.{MIN_PYTHON[1]}+ required, found {found}")
        return False
    print(f"✅ Python {found}")
    return True


def install_requirements(args):
    if args.skip_install:
        print("⏭️  Skipping pip install")
        return True
    command = [sys.executable, "-m", "pip", "install", "-r", str(ROOT / "requirements.txt")]
    print(f"📦 {' '.join(command)}")
    try:
        subprocess.check_call(command)
    except subprocess.CalledProcessError as e:
        print(f"❌ pip exited with {e.returncode}")
        return False
    return True


def write_env(args):
    """Copy .env.example to .env unless a .env is already there."""
    target, template = ROOT / ".env", ROOT / ".env.example"
    if target.exists():
        print("⚠️  .env present, leaving it untouched")
        return True
    if not template.exists():
        print("❌ .env.example is missing")
        return False
    shutil.copy(template, target)
    print("✅ .env written; ALUSAFE_THREADS and the budgets are the settings worth reviewing")
    return True


def make_directories(args):
    from config import Config

    for directory in (Config.LOG_DIR, "dumps"):
        path = ROOT / directory
        if not path.is_dir():
            path.mkdir(parents=True)
            print(f"📁 {path.relative_to(ROOT)}/")
    return True


def check_config(args):
    from config import Config

    result = Config.validate()
    for warning in result["warnings"]:
        print(f"⚠️  {warning}")
    for error in result["errors"]:
        print(f"❌ {error}")
    return result["valid"]


def smoke_test(args):
    """Two results small enough to compute instantly and known in advance."""
    try:
        from modules.closure import close
        from modules.optable import builtin
        from modules.safety import analyze
    except ImportError as e:
        print(f"❌ {e} (are the requirements installed?)")
        return False

    verdict = analyze(builtin("div_classical", 4)).verdict
    size = close([builtin("mul", 2), builtin("add3", 2)], 2, 1).size
    if verdict != "UNSAFE" or size != 8:
        print(f"❌ unexpected results: div_classical@4 {verdict}, |close(mul, add3)| = {size}")
        return False
    print("✅ div_classical@4 is UNSAFE and close({mul, add3}) at 2 bits has 8 members")
    return True


STEPS = [
    ("Interpreter", check_interpreter),
    ("Requirements", install_requirements),
    ("Environment file", write_env),
    ("Directories", make_directories),
    ("Configuration", check_config),
    ("Smoke test", smoke_test),
]


def main(argv=None):
    parser = argparse.ArgumentParser(description="Bootstrap the ALU safety toolkit")
    parser.add_argument("--skip-install", action="store_true", help="Do not run pip")
    args = parser.parse_args(argv)

    sys.path.insert(0, str(ROOT))
    print("🚀 ALU safety toolkit setup")
    for number, (label, step) in enumerate(STEPS, 1):
        print(f"\n[{number}/{len(STEPS)}] {label}")
        if not step(args):
            print(f"\n❌ Stopped at: {label}")
            return 1

    print("\n🎉 Ready. Next: python main.py analyze --op div_classical --width 4")
    return 0


if __name__ == "__main__":
    # pip / PEP 517 frontends invoke this file with setuptools commands
    # (egg_info, dist_info, ...); hand those to setuptools, which reads pyproject.toml.
    if len(sys.argv) > 1 and not sys.argv[1].startswith("-"):
        import setuptools

        setuptools.setup()
    else:
        sys.exit(main())
