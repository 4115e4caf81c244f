"""Frame-level watermark verification toolkit.

Payload coding (systematic LDPC over short words), detection statistics
with log-domain tail probabilities, template-key tamper localization,
noisy-channel Monte-Carlo studies, and a reference transform-domain
frame embedder with a distortion bench, tied together by a CLI.
"""

from .bits import BitString, hamming_distance, hamming_similarity
from .channel import (AttackPlan, ChannelModel, SimConfig, SimReport,
                      burst_channel, clean_window_probability,
                      fit_burst_length, fitted_burst_channel, flip_bits, preset,
                      preset_names, simulate_pipeline, threshold_sweep,
                      word_accuracy_experiment)
from .corpus import corpus_frames, synth_frame
from .distortions import (DISTORTION_SUITE, DistortionSpec, EncoderNotConfigured,
                          distort, normalize_geometry, run_robustness_bench)
from .ldpc import (DecodeResult, LdpcCode, LdpcConstructionError, build_ldpc,
                   ldpc_decode, ldpc_encode)
from .localize import (FrameKeyMatrix, LocalizationResult, TamperEvents,
                       TamperSpec, apply_combined, apply_drop, apply_insert,
                       apply_swap, diagnose, localize)
from .manifest import Manifest, build_manifest
from .stats import (DetectionReport, aggregate, bit_accuracy, log_p_value,
                    make_report, report_from_bits, word_accuracy)
from .templates import (ControlSequence, DecodedControl, TemplateSet,
                        codeword_templates, control_capacity, decode_control,
                        generate_templates)
from .watermark import (EmbedParams, embed_frame, extract_frame, psnr)

__version__ = "0.1.0"
