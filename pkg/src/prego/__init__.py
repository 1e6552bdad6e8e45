"""Online one-class procedural-mistake detection over symbolic action streams."""

__version__ = "0.1.0"

from .anticipation import (
    AnticipationResult,
    ContextSet,
    PatternMachineBackend,
    TransitionMatrix,
    TransitionMatrixBackend,
    build_context,
    fit_transition_matrix,
    one_step_verdicts,
    pattern_machine_predict,
)
from .benchmark import (
    BenchmarkSplit,
    MetricsReport,
    compute_metrics,
    first_alarm_accuracy,
    split_by_confidence,
    split_occ,
    trim_to_first_mistake,
)
from .core import (
    ActionVocabulary,
    Procedure,
    StepRecord,
    SymbolAlphabet,
    build_alphabet,
    build_vocabulary,
    decode,
    encode,
)
from .detection import DetectionRun, Verdict, detect_step, run_online
from .ingestion import (
    FramePrediction,
    TranscriptSource,
    align_predicted_steps,
    dedup_stream,
    parse_annotations,
    parse_confidence,
    parse_predictions,
    to_step_sequence,
)
from .llm import LLMBackend, LLMClient, TokenBudget, llm_predict, parse_emission
from .prompts import PromptSpec, render_prompt
from .synthetic import (
    SyntheticGrammar,
    TaskGrammar,
    generate_procedures,
    grammar_from_obj,
    inject_mistake,
    load_grammar,
)
