"""STRIPS-subset planning language: parsing, validation, grounding, transitions.

The language is an s-expression dialect covering positive conjunctive
preconditions and add/delete effects, without types, negative preconditions,
conditional effects or action costs.  Actions have unit cost.  Grammar:

    (domain NAME
      (:predicates (p ?x ?y) (q) ...)
      (:action NAME
        :parameters (?x ?y ...)
        :precondition (and (p ?x ?y) ...)
        :effect (and (q ?x) (not (p ?x ?y)) ...)))

    (problem NAME
      (:domain NAME)
      (:objects a b c ...)
      (:init (p a b) ...)
      (:goal (and (q a) ...)))

`:precondition` and `:goal` accept either an `(and ...)` conjunction or a
single atom; comments run from `;` to end of line.  Typed benchmark files are
not understood: types must be pre-compiled into unary predicates listed in
`:init`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ContractViolation, ParseError

# A state is the set of indices (into GroundTask.atoms) of its true atoms.
State = frozenset

_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*\Z")


# ── Domain / instance model ──────────────────────────────────────────────────


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    arity: int


@dataclass(frozen=True)
class SchemaAtom:
    """Atom over schema variables, e.g. on(?x, ?y)."""

    predicate: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class ActionSchema:
    name: str
    parameters: tuple[str, ...]
    precondition: frozenset[SchemaAtom]
    add_effects: frozenset[SchemaAtom]
    del_effects: frozenset[SchemaAtom]


@dataclass(frozen=True)
class DomainDef:
    name: str
    predicates: tuple[PredicateSchema, ...]
    actions: tuple[ActionSchema, ...]

    def arity(self, predicate: str) -> int:
        return self._arities[predicate]

    @property
    def _arities(self) -> dict[str, int]:
        return {p.name: p.arity for p in self.predicates}


@dataclass(frozen=True)
class InstanceDef:
    name: str
    domain_name: str
    objects: tuple[str, ...]
    init: frozenset[tuple[str, tuple[str, ...]]]
    goal: frozenset[tuple[str, tuple[str, ...]]]


# ── Tokenizer / reader ───────────────────────────────────────────────────────


@dataclass(frozen=True)
class _Token:
    value: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            col += 1
            i += 1
            continue
        if ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
            continue
        j = i
        while j < n and text[j] not in " \t\r\n();":
            j += 1
        tokens.append(_Token(text[i:j], line, col))
        col += j - i
        i = j
    return tokens


class _Reader:
    """Nested-list reader over the token stream, keeping source positions."""

    def __init__(self, text: str):
        self._tokens = _tokenize(text)
        self._pos = 0

    def read(self):
        tok = self._next("expression")
        if tok.value == "(":
            items = []
            while True:
                peek = self._peek()
                if peek is None:
                    raise ParseError("unbalanced '('", tok.line, tok.col)
                if peek.value == ")":
                    self._pos += 1
                    return items, tok
                items.append(self.read())
            # unreachable
        if tok.value == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        return tok.value, tok

    def expect_end(self):
        peek = self._peek()
        if peek is not None:
            raise ParseError("trailing content after expression", peek.line, peek.col)

    def _peek(self):
        return self._tokens[self._pos] if self._pos < len(self._tokens) else None

    def _next(self, what: str) -> _Token:
        tok = self._peek()
        if tok is None:
            raise ParseError(f"unexpected end of input, expected {what}")
        self._pos += 1
        return tok


def _is_symbol(node) -> bool:
    return isinstance(node[0], str)


def _symbol(node, what: str) -> str:
    value, tok = node
    if not isinstance(value, str):
        raise ParseError(f"expected {what}", tok.line, tok.col)
    return value


def _check_name(name: str, tok: _Token, what: str) -> str:
    if not _NAME_RE.match(name):
        raise ParseError(f"invalid {what} {name!r}", tok.line, tok.col)
    return name


# ── Parsing ──────────────────────────────────────────────────────────────────


def _parse_atom(node, what: str) -> tuple[str, tuple[str, ...], _Token]:
    value, tok = node
    if isinstance(value, str) or not value or not _is_symbol(value[0]):
        raise ParseError(f"expected {what} atom", tok.line, tok.col)
    pred = _symbol(value[0], "predicate name")
    args = tuple(_symbol(item, "atom argument") for item in value[1:])
    return pred, args, tok


def _parse_conjunction(node, what: str) -> list[tuple[str, tuple[str, ...], _Token]]:
    value, tok = node
    if isinstance(value, str):
        raise ParseError(f"expected {what}", tok.line, tok.col)
    if value and _is_symbol(value[0]) and value[0][0] == "and":
        return [_parse_atom(item, what) for item in value[1:]]
    return [_parse_atom(node, what)]


def _check_atom(pred, args, tok, arities: dict[str, int]):
    if pred not in arities:
        raise ParseError(f"undeclared predicate {pred!r}", tok.line, tok.col)
    if len(args) != arities[pred]:
        raise ParseError(
            f"arity mismatch for {pred}({', '.join(args)}): "
            f"declared arity {arities[pred]}, got {len(args)}",
            tok.line,
            tok.col,
        )


def parse_domain(text: str) -> DomainDef:
    """Parse and validate a domain description."""
    reader = _Reader(text)
    value, tok = reader.read()
    reader.expect_end()
    if isinstance(value, str) or not value or _symbol(value[0], "keyword") != "domain":
        raise ParseError("expected (domain ...)", tok.line, tok.col)
    if len(value) < 2:
        raise ParseError("domain needs a name", tok.line, tok.col)
    name = _check_name(_symbol(value[1], "domain name"), value[1][1], "domain name")

    predicates: list[PredicateSchema] = []
    actions: list[ActionSchema] = []
    for section in value[2:]:
        sec_value, sec_tok = section
        if isinstance(sec_value, str) or not sec_value:
            raise ParseError("expected (:predicates ...) or (:action ...)", sec_tok.line, sec_tok.col)
        head = _symbol(sec_value[0], "section keyword")
        if head == ":predicates":
            for item in sec_value[1:]:
                pred, args, atom_tok = _parse_atom(item, "predicate declaration")
                _check_name(pred, atom_tok, "predicate name")
                for arg in args:
                    if not arg.startswith("?"):
                        raise ParseError(
                            f"predicate parameter {arg!r} must be a ?variable",
                            atom_tok.line,
                            atom_tok.col,
                        )
                if any(p.name == pred for p in predicates):
                    raise ParseError(f"duplicate predicate {pred!r}", atom_tok.line, atom_tok.col)
                predicates.append(PredicateSchema(pred, len(args)))
        elif head == ":action":
            actions.append(_parse_action(sec_value, sec_tok, {p.name: p.arity for p in predicates}))
            if sum(a.name == actions[-1].name for a in actions) > 1:
                raise ParseError(f"duplicate action {actions[-1].name!r}", sec_tok.line, sec_tok.col)
        else:
            raise ParseError(f"unknown domain section {head!r}", sec_tok.line, sec_tok.col)
    return DomainDef(name, tuple(predicates), tuple(actions))


def _parse_action(value, tok: _Token, arities: dict[str, int]) -> ActionSchema:
    if len(value) < 2:
        raise ParseError("action needs a name", tok.line, tok.col)
    name = _check_name(_symbol(value[1], "action name"), value[1][1], "action name")
    sections: dict[str, object] = {}
    i = 2
    while i < len(value):
        key = _symbol(value[i], "action keyword")
        if key not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"unknown action keyword {key!r}", value[i][1].line, value[i][1].col)
        if i + 1 >= len(value):
            raise ParseError(f"{key} needs a value", value[i][1].line, value[i][1].col)
        sections[key] = value[i + 1]
        i += 2
    if ":parameters" not in sections:
        raise ParseError(f"action {name!r} lacks :parameters", tok.line, tok.col)

    params_value, params_tok = sections[":parameters"]
    if isinstance(params_value, str):
        raise ParseError("expected parameter list", params_tok.line, params_tok.col)
    parameters = []
    for item in params_value:
        var = _symbol(item, "parameter")
        if not var.startswith("?") or len(var) < 2:
            raise ParseError(f"parameter {var!r} must be a ?variable", item[1].line, item[1].col)
        if var in parameters:
            raise ParseError(f"duplicate parameter {var!r}", item[1].line, item[1].col)
        parameters.append(var)

    def checked(atoms, where) -> frozenset[SchemaAtom]:
        out = set()
        for pred, args, atom_tok in atoms:
            _check_atom(pred, args, atom_tok, arities)
            for arg in args:
                if not arg.startswith("?"):
                    raise ParseError(
                        f"constant {arg!r} in {where} of {name!r} (constants unsupported)",
                        atom_tok.line,
                        atom_tok.col,
                    )
                if arg not in parameters:
                    raise ParseError(
                        f"variable {arg} not among parameters of {name!r}",
                        atom_tok.line,
                        atom_tok.col,
                    )
            out.add(SchemaAtom(pred, args))
        return frozenset(out)

    pre = checked(
        _parse_conjunction(sections[":precondition"], "precondition") if ":precondition" in sections else [],
        "precondition",
    )

    adds: list = []
    dels: list = []
    if ":effect" in sections:
        eff_value, eff_tok = sections[":effect"]
        if isinstance(eff_value, str):
            raise ParseError("expected effect", eff_tok.line, eff_tok.col)
        items = eff_value[1:] if eff_value and _is_symbol(eff_value[0]) and eff_value[0][0] == "and" else [sections[":effect"]]
        for item in items:
            item_value, item_tok = item
            if not isinstance(item_value, str) and item_value and _is_symbol(item_value[0]) and item_value[0][0] == "not":
                if len(item_value) != 2:
                    raise ParseError("(not ...) takes one atom", item_tok.line, item_tok.col)
                dels.append(_parse_atom(item_value[1], "delete effect"))
            else:
                adds.append(_parse_atom(item, "add effect"))
    add_set = checked(adds, "effect")
    del_set = checked(dels, "effect")
    overlap = add_set & del_set
    if overlap:
        atom = next(iter(overlap))
        raise ParseError(f"action {name!r} both adds and deletes {atom.predicate}({', '.join(atom.args)})")
    return ActionSchema(name, tuple(parameters), pre, add_set, del_set)


def parse_instance(text: str, domain: DomainDef) -> InstanceDef:
    """Parse and validate an instance against its (already parsed) domain."""
    reader = _Reader(text)
    value, tok = reader.read()
    reader.expect_end()
    if isinstance(value, str) or not value or _symbol(value[0], "keyword") != "problem":
        raise ParseError("expected (problem ...)", tok.line, tok.col)
    if len(value) < 2:
        raise ParseError("problem needs a name", tok.line, tok.col)
    name = _check_name(_symbol(value[1], "problem name"), value[1][1], "problem name")

    arities = {p.name: p.arity for p in domain.predicates}
    domain_name = None
    objects: list[str] = []
    init: list[tuple[str, tuple[str, ...]]] = []
    goal: list[tuple[str, tuple[str, ...]]] = []
    seen: set[str] = set()
    for section in value[2:]:
        sec_value, sec_tok = section
        if isinstance(sec_value, str) or not sec_value:
            raise ParseError("expected problem section", sec_tok.line, sec_tok.col)
        head = _symbol(sec_value[0], "section keyword")
        if head in seen:
            raise ParseError(f"duplicate section {head!r}", sec_tok.line, sec_tok.col)
        seen.add(head)
        if head == ":domain":
            if len(sec_value) != 2:
                raise ParseError(":domain takes one name", sec_tok.line, sec_tok.col)
            domain_name = _symbol(sec_value[1], "domain name")
            if domain_name != domain.name:
                raise ParseError(
                    f"instance declares domain {domain_name!r}, parsed domain is {domain.name!r}",
                    sec_tok.line,
                    sec_tok.col,
                )
        elif head == ":objects":
            for item in sec_value[1:]:
                obj = _check_name(_symbol(item, "object name"), item[1], "object name")
                if obj in objects:
                    raise ParseError(f"duplicate object {obj!r}", item[1].line, item[1].col)
                objects.append(obj)
        elif head in (":init", ":goal"):
            atoms = (
                [_parse_atom(item, "init atom") for item in sec_value[1:]]
                if head == ":init"
                else _parse_conjunction(sec_value[1], "goal") if len(sec_value) == 2 else None
            )
            if atoms is None:
                raise ParseError(":goal takes one conjunction or atom", sec_tok.line, sec_tok.col)
            target = init if head == ":init" else goal
            for pred, args, atom_tok in atoms:
                _check_atom(pred, args, atom_tok, arities)
                for arg in args:
                    if arg not in objects:
                        raise ParseError(f"unknown object {arg!r}", atom_tok.line, atom_tok.col)
                target.append((pred, args))
        else:
            raise ParseError(f"unknown problem section {head!r}", sec_tok.line, sec_tok.col)
    if domain_name is None:
        raise ParseError("problem lacks (:domain ...)", tok.line, tok.col)
    return InstanceDef(name, domain_name, tuple(objects), frozenset(init), frozenset(goal))


# ── Pretty printer ──────────────────────────────────────────────────────────


def _atom_text(pred: str, args: Iterable[str]) -> str:
    parts = " ".join(args)
    return f"({pred} {parts})" if parts else f"({pred})"


def _schema_atoms_text(atoms: frozenset[SchemaAtom]) -> str:
    return " ".join(_atom_text(a.predicate, a.args) for a in sorted(atoms, key=lambda a: (a.predicate, a.args)))


def domain_to_text(domain: DomainDef) -> str:
    """Canonical text form; parses back to an equal DomainDef."""
    lines = [f"(domain {domain.name}"]
    preds = " ".join(_atom_text(p.name, (f"?x{i}" for i in range(p.arity))) for p in domain.predicates)
    lines.append(f"  (:predicates {preds})")
    for action in domain.actions:
        dels = " ".join(
            f"(not {_atom_text(a.predicate, a.args)})"
            for a in sorted(action.del_effects, key=lambda a: (a.predicate, a.args))
        )
        adds = _schema_atoms_text(action.add_effects)
        effect = " ".join(x for x in (adds, dels) if x)
        lines.append(
            f"  (:action {action.name}\n"
            f"    :parameters ({' '.join(action.parameters)})\n"
            f"    :precondition (and {_schema_atoms_text(action.precondition)})\n"
            f"    :effect (and {effect}))"
        )
    return "\n".join(lines) + ")\n"


def instance_to_text(instance: InstanceDef) -> str:
    """Canonical text form; parses back to an equal InstanceDef."""
    init = " ".join(_atom_text(p, a) for p, a in sorted(instance.init))
    goal = " ".join(_atom_text(p, a) for p, a in sorted(instance.goal))
    return (
        f"(problem {instance.name}\n"
        f"  (:domain {instance.domain_name})\n"
        f"  (:objects {' '.join(instance.objects)})\n"
        f"  (:init {init})\n"
        f"  (:goal (and {goal})))\n"
    )


def load_domain(path: str | Path) -> DomainDef:
    return parse_domain(Path(path).read_text())


def load_instance(path: str | Path, domain: DomainDef) -> InstanceDef:
    return parse_instance(Path(path).read_text(), domain)


# ── Grounding ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class GroundAtom:
    predicate: int  # index into GroundTask.predicates
    args: tuple[int, ...]  # object indices


@dataclass(frozen=True)
class GroundAction:
    __slots__ = ("schema", "binding", "pre", "add", "delete")
    schema: int  # index into domain.actions
    binding: tuple[int, ...]
    pre: tuple[int, ...]  # sorted atom indices
    add: tuple[int, ...]
    delete: tuple[int, ...]


class GroundTask:
    """Explicit state-transition model of one domain/instance pair.

    Immutable after construction; atom and action orderings are lexicographic
    by name then argument indices, so two groundings of the same input assign
    identical indices.
    """

    def __init__(self, domain: DomainDef, instance: InstanceDef):
        self.domain = domain
        self.instance = instance
        self.objects: tuple[str, ...] = instance.objects
        self.predicates: tuple[PredicateSchema, ...] = tuple(
            sorted(domain.predicates, key=lambda p: p.name)
        )
        self._object_index = {name: i for i, name in enumerate(self.objects)}
        self._predicate_index = {p.name: i for i, p in enumerate(self.predicates)}

        n = len(self.objects)
        atoms: list[GroundAtom] = []
        atom_index: dict[tuple[int, tuple[int, ...]], int] = {}
        for pi, pred in enumerate(self.predicates):
            for args in product(range(n), repeat=pred.arity):
                atom_index[(pi, args)] = len(atoms)
                atoms.append(GroundAtom(pi, args))
        self.atoms: tuple[GroundAtom, ...] = tuple(atoms)
        self._atom_index = atom_index

        self.actions: tuple[GroundAction, ...] = tuple(self._ground_actions())
        self.initial: State = frozenset(self._atom_id_by_name(p, a) for p, a in instance.init)
        self.goal: frozenset = frozenset(self._atom_id_by_name(p, a) for p, a in instance.goal)

        # Static predicates never change; actions whose static preconditions
        # fail in the initial state can never apply along any trajectory from
        # it, so successor generation and h_max skip them.
        dynamic = {
            atom.predicate
            for schema in domain.actions
            for atom in schema.add_effects | schema.del_effects
        }
        dynamic = {self._predicate_index[pred] for pred in dynamic}
        self.static_predicates: frozenset = frozenset(
            i for i in range(len(self.predicates)) if i not in dynamic
        )
        static_universe = {
            i for i, atom in enumerate(self.atoms) if atom.predicate in self.static_predicates
        }
        init_statics = self.initial & static_universe
        self._foreign_statics = frozenset(static_universe - init_statics)
        self.viable_actions: tuple[int, ...] = tuple(
            ai
            for ai, action in enumerate(self.actions)
            if all(a in self.initial for a in action.pre if a in static_universe)
        )

    def _ground_actions(self) -> Iterator[GroundAction]:
        n = len(self.objects)
        order = sorted(range(len(self.domain.actions)), key=lambda i: self.domain.actions[i].name)
        for si in order:
            schema = self.domain.actions[si]
            pre_t = [(self._predicate_index[a.predicate], tuple(schema.parameters.index(v) for v in a.args)) for a in sorted(schema.precondition, key=lambda a: (a.predicate, a.args))]
            add_t = [(self._predicate_index[a.predicate], tuple(schema.parameters.index(v) for v in a.args)) for a in sorted(schema.add_effects, key=lambda a: (a.predicate, a.args))]
            del_t = [(self._predicate_index[a.predicate], tuple(schema.parameters.index(v) for v in a.args)) for a in sorted(schema.del_effects, key=lambda a: (a.predicate, a.args))]
            index = self._atom_index
            for binding in product(range(n), repeat=len(schema.parameters)):
                pre = tuple(sorted(index[(p, tuple(binding[i] for i in pos))] for p, pos in pre_t))
                add = tuple(sorted(index[(p, tuple(binding[i] for i in pos))] for p, pos in add_t))
                dele = tuple(sorted(index[(p, tuple(binding[i] for i in pos))] for p, pos in del_t))
                yield GroundAction(si, binding, pre, add, dele)

    # ── Naming helpers ──

    def _atom_id_by_name(self, pred: str, args: tuple[str, ...]) -> int:
        return self._atom_index[(self._predicate_index[pred], tuple(self._object_index[a] for a in args))]

    def atom_id(self, pred: str, *args: str) -> int:
        """Index of a named ground atom, e.g. atom_id('on', 'a', 'b')."""
        return self._atom_id_by_name(pred, args)

    def atom_token(self, atom_id: int) -> str:
        atom = self.atoms[atom_id]
        name = self.predicates[atom.predicate].name
        if not atom.args:
            return f"{name}()"
        return f"{name}({','.join(self.objects[i] for i in atom.args)})"

    def action_token(self, action_id: int) -> str:
        action = self.actions[action_id]
        name = self.domain.actions[action.schema].name
        if not action.binding:
            return f"{name}()"
        return f"{name}({','.join(self.objects[i] for i in action.binding)})"

    def state_tokens(self, state: State) -> list[str]:
        return sorted(self.atom_token(a) for a in state)

    def state_from_tokens(self, tokens: Iterable[str]) -> State:
        ids = []
        for token in tokens:
            m = re.match(r"([A-Za-z][A-Za-z0-9_-]*)\(([^)]*)\)\Z", token)
            if not m:
                raise ParseError(f"malformed atom token {token!r}")
            args = tuple(a for a in m.group(2).split(",") if a)
            try:
                ids.append(self._atom_id_by_name(m.group(1), args))
            except KeyError:
                raise ParseError(f"atom token {token!r} not in this task's universe") from None
        return frozenset(ids)

    # ── Transition semantics ──

    def applicable(self, state: State, action_id: int) -> bool:
        state = frozenset(state)
        return all(a in state for a in self.actions[action_id].pre)

    def apply(self, state: State, action_id: int) -> State:
        if not self.applicable(state, action_id):
            raise ContractViolation(
                f"action {self.action_token(action_id)} is not applicable in the given state"
            )
        action = self.actions[action_id]
        return frozenset(state).difference(action.delete).union(action.add)

    def is_goal(self, state: State) -> bool:
        return self.goal <= frozenset(state)

    def candidate_actions(self, state: State) -> Iterable[int]:
        """Action ids worth testing in `state` (sound, deterministic order)."""
        if self._foreign_statics and not self._foreign_statics.isdisjoint(state):
            return range(len(self.actions))
        return self.viable_actions

    def applicable_actions(self, state: State) -> list[int]:
        state = frozenset(state)
        return [ai for ai in self.candidate_actions(state) if all(a in state for a in self.actions[ai].pre)]

    def successors(self, state: State) -> list[tuple[int, State]]:
        """(action id, next state) pairs in deterministic ground-action order."""
        state = frozenset(state)
        out = []
        for ai in self.candidate_actions(state):
            action = self.actions[ai]
            if all(a in state for a in action.pre):
                out.append((ai, state.difference(action.delete).union(action.add)))
        return out


def ground(domain: DomainDef, instance: InstanceDef) -> GroundTask:
    """Instantiate every schema over all object bindings."""
    return GroundTask(domain, instance)
