"""Stochastic sequence subsampling trained through its expected output."""

from .align import (
    AlignmentGradients,
    alignment_backward,
    alignment_dp,
    alignment_dp_backward,
    alignment_naive,
    expected_output,
    first_row,
)
from .oracle import SampledOutput, empirical_alignment, enumerate_exact, sample_once
from .toy import ToyPair, gen_batch, one_hot, transduce

__version__ = "0.1.0"
