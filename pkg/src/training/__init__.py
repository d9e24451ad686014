from .train_config import Precision, TrainConfig
from .tasks import (
    BOS_ID,
    EOS_ID,
    FIRST_CONTENT_ID,
    PAD_ID,
    AbstractTask,
    Batch,
    SpecialIds,
    SynthTask,
    TaskConfig,
    TaskKind,
    build_task,
    collate,
    make_batch,
    make_batches,
    stream_seed,
)
from .data_files import DataFileError, FileTask
from .prefetch import BatchPrefetcher
from .optimizer import Adam, AdamState, NonFiniteGradientError, adam_step, clip_grad_norm, lr_schedule
from .trainer import (
    ReportRow,
    RunReport,
    TaskMismatchError,
    check_task_fits,
    Trainer,
    TrainingDiverged,
    batch_loss,
    evaluate_nll,
    train_run,
)
from .decoding import greedy_decode, sequence_accuracy
