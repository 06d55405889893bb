"""dbasm: an executable engine for database abstract state machines.

Parses rule and formula DSLs, computes update-set/multiset semantics,
evaluates the one-step modal logic with aggregation terms and bounded
second-order quantification, validates the axiom suite semantically,
runs machines, and lowers formulae to a first-order logic with
set-membership predicates.
"""

from .state import (
    UNDEF,
    AlgNum,
    DbElem,
    FuncDecl,
    Location,
    Signature,
    State,
    Update,
    UpdateMultiset,
    UpdateSet,
    Valuation,
    apply,
    is_consistent,
    lookup,
    multiset_to_set,
    tag_multiset,
    untag,
)
from .semantics import (
    UpdateMultisetFamily,
    UpdateSetFamily,
    collapse_let,
    location_operator_apply,
    seq_merge,
    update_multisets,
    update_sets,
)
from .evaluator import QuantBudget, default_budget, eval_formula, eval_term, guarded_so_domain
from .parser import parse_formula, parse_machine, parse_rule, parse_state, parse_term
from .printer import fmt_formula, fmt_rule, fmt_term
from .derived import expand, rules_equivalent
from .machine import Machine, RunTrace, explore, machine_from_file, run, successors
from .ast import free_vars

__all__ = [name for name in dir() if not name.startswith("_")]
