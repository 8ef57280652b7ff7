"""Centralized and sequential controller/topology co-design."""

from .types import (CostSpec, Lemma1Box, Segment, SynthesisResult, WssCertificate,
                    certify_weak_string_stability, lemma1_check, lemma1_region)
from .centralized import centralized_codesign, recertify, synthesize_locals
from .decentralized import (LedgerSegment, PlatoonLedger, StepResult,
                            decentralized_codesign, decentralized_step, merge,
                            split_ledger)
from .metrics import weak_coupling_metric

__all__ = [
    "CostSpec", "Lemma1Box", "Segment", "SynthesisResult", "WssCertificate",
    "certify_weak_string_stability", "lemma1_check", "lemma1_region",
    "centralized_codesign", "recertify", "synthesize_locals",
    "LedgerSegment", "PlatoonLedger", "StepResult", "decentralized_codesign",
    "decentralized_step", "merge", "split_ledger", "weak_coupling_metric",
]
