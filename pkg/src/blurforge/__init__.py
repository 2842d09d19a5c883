"""blurforge: deterministic motion-blur dataset synthesis and evaluation."""

from .blur import (BlurResult, BlurSpec, BlurType, apply_blur, blur_curved, blur_edge_ring,
                   blur_random_walk, blur_rolling, blur_straight, blur_zoom_rotation,
                   default_n_frames, generate_random_walk_kernel, generate_trajectory)
from .compositing import CompositeOutput, composite, feather_alpha, partial_region
from .dataset import (BuildConfig, Coverage, CurriculumStage, PartialBuildError, SampleRecord,
                      SamplingMode, SourceEntry, build_dataset, build_sample, plan_sample,
                      read_manifest, resolve_output, split_sources, verify_manifest)
from .imaging import (AffineTransform, GrayMask, Kernel2D, RgbaPremultiplied, RgbImage,
                      convolve, gaussian_blur_mask, load_gray, load_intensity, load_rgb,
                      premultiply, save_intensity, save_mask, save_rgb, unpremultiply_over, warp)
from .losses import (LossBreakdown, LossInputs, LossWeights, aux_loss, bce_loss, dice_loss,
                     export_loss_fixtures, focal_tversky_loss, grad_check, gradcheck_report,
                     masked_huber_loss, prevalence_loss, total_loss, tversky_index)
from .metrics import (ClassificationReport, ConfusionCounts, Curve, SegmentationReport,
                      classification_report, confusion, default_threshold_grid,
                      grid_search_threshold, image_score, pr_curve, roc_auc,
                      segmentation_report)

__version__ = "0.1.0"
