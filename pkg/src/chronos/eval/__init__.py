from .benchmark import (
    CATEGORY_CODES,
    CATEGORY_ORDER,
    EXPECTED_COUNTS,
    BenchmarkFormatError,
    BenchmarkQuestion,
    category_counts,
    load_benchmark,
)
from .harness import AblationConfig, IndexCache, dump_results, read_results, run_eval, run_question
from .judge import Judgment, LLMJudge, StringMatchJudge, judge
from .report import aggregate_report, format_report
from .sampling import DEFAULT_SEED, allocate, stratified_sample

__all__ = [
    "AblationConfig",
    "BenchmarkFormatError",
    "BenchmarkQuestion",
    "CATEGORY_CODES",
    "CATEGORY_ORDER",
    "DEFAULT_SEED",
    "EXPECTED_COUNTS",
    "IndexCache",
    "Judgment",
    "LLMJudge",
    "StringMatchJudge",
    "aggregate_report",
    "allocate",
    "category_counts",
    "dump_results",
    "format_report",
    "judge",
    "load_benchmark",
    "read_results",
    "run_eval",
    "run_question",
    "stratified_sample",
]
