import os
import re
import sys
import importlib

projpath = os.path.normpath(os.path.join(os.path.abspath(__file__), "../.."))
sys.path.insert(0, projpath)

import bpseg


def test_import():
    folderpath = os.path.join(projpath, "bpseg")
    files = os.listdir(folderpath)
    for module in ["." + module[:-3] for module in files
                   if module.endswith(".py") and "_" not in module]:

        module = importlib.import_module(module, "bpseg")
        all_list = getattr(module, "__all__", None)
        if all_list is not None:
            for obj in all_list:
                assert getattr(bpseg, obj, None) is not None


def test_version():
    assert bpseg.__version__ == bpseg.LIB_VER


def package_sources():
    folderpath = os.path.join(projpath, "bpseg")
    sources = {}
    for name in sorted(os.listdir(folderpath)):
        if name.endswith(".py"):
            with open(os.path.join(folderpath, name)) as f:
                sources[name] = f.read()
    return sources


def test_loggers_used():
    for name, source in package_sources().items():
        if "logger = logging.getLogger" in source:
            assert "logger." in source, name


def test_constants_used():
    sources = package_sources()
    const = sources.pop("const.py")
    names = re.findall(r"^([A-Z][A-Z0-9_]*) = ", const, re.MULTILINE)
    assert names
    for name in names:
        pattern = re.compile(rf"\b{name}\b")
        assert any(pattern.search(s) for s in sources.values()), name
