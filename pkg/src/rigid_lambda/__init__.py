"""Rigid intersection types for infinitary lambda-calculus.

Modules: ``lambda_core`` (terms, positions, reduction), ``rigid_types``
(sequence types), ``derivation`` (proof trees, bisupports, isomorphisms),
``dynamics`` (subject reduction and expansion), ``approximation`` (the
approximation order and its lattice), ``normal_form`` (derivations of normal
forms and their truncations), ``multiset_bridge`` (collapse to multiset
types) and ``cli``.
"""
from .lambda_core import (alpha_equal, applicative_depth, collapse, format_position, format_term,
                          head_redex, is_001, is_normal_form, parse_position, parse_term,
                          reduce_at, subterm_at, unfold)
from .rigid_types import (Arrow, Context, Seq, TVar, efo, efo_empty, format_type, is_unforgetful,
                          parse_type, type_join, type_meet)
from .derivation import (Derivation, Judgment, Left, RegularDerivation, Right, bisupport,
                         check_valid, from_json, iso_check, is_quantitative, nr, restrict,
                         to_json, view)
from .dynamics import (TrackCoder, head_normalize, refute_finite_typability, residual_map,
                       scrs_expand, scrs_limit, scrs_reduce, subject_expand, subject_reduce,
                       subject_substitute)
from .approximation import (ApproximationChain, approx_leq, deriv_join, deriv_meet,
                            is_approximable, minimal_approx, reach)
from .normal_form import (RegularNF, extract, full_nf_derivation, trivial_construct, truncate_nf,
                          unforgetful_nf_derivation)
from .multiset_bridge import (collapse_type, is_quantitative_m, m_equiv)

__version__ = "0.1.0"
