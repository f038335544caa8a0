"""Access to the canonical domain/instance files shipped with the package."""

from __future__ import annotations

from functools import lru_cache
from pathlib import Path

from .pddl import DomainDef, GroundTask, ground, load_domain, load_instance

FIXTURE_DIR = Path(__file__).parent / "fixtures"

# Experiment tag -> canonical domain file.  Tags distinguish goal families
# (blocks-clear vs blocks-on) and map regimes (vacuum vs vacuum-m) sharing a
# domain encoding.
DOMAIN_FILES = {
    "blocks-clear": "blocks.pddl",
    "blocks-on": "blocks.pddl",
    "blocks-on-sigma": "blocks.pddl",
    "gripper": "gripper.pddl",
    "transport": "transport.pddl",
    "transport-sigma": "transport.pddl",
    "visitall": "visitall.pddl",
    "vacuum": "vacuum.pddl",
    "vacuum-r": "vacuum.pddl",
    "vacuum-m": "vacuum-m.pddl",
    "rovers-simple": "rovers-simple.pddl",
}


def fixture_path(name: str) -> Path:
    return FIXTURE_DIR / name


@lru_cache(maxsize=None)
def domain_for_tag(tag: str) -> DomainDef:
    if tag not in DOMAIN_FILES:
        raise KeyError(f"unknown domain tag {tag!r}; expected one of {sorted(DOMAIN_FILES)}")
    return load_domain(fixture_path(DOMAIN_FILES[tag]))


def load_task(domain_path: str | Path, instance_path: str | Path) -> GroundTask:
    domain = load_domain(domain_path)
    return ground(domain, load_instance(instance_path, domain))


def fixture_task(instance_name: str, tag: str | None = None) -> GroundTask:
    """Ground a shipped instance against its domain (tag inferred if omitted)."""
    instance_file = fixture_path(instance_name)
    if tag is None:
        stem = Path(instance_name).stem
        for known, domain_file in DOMAIN_FILES.items():
            base = Path(domain_file).stem
            if stem == base or stem.startswith(base) and stem[len(base) :][:1].isdigit():
                tag = known
                break
        else:
            raise KeyError(f"cannot infer domain for fixture {instance_name!r}; pass tag=")
    domain = domain_for_tag(tag)
    return ground(domain, load_instance(instance_file, domain))
