from .octree import OctreeFeatureGrid, OctreeError, build_octree, morton_encode, morton_decode
from .model import (FieldConfig, FieldDecoders, positional_encode, decode_sdf,
                    decode_rgb, decode_values, sdf_gradient)
from .sampling import RayBank, RaySampleBatch, build_ray_bank, sample_rays
from .loss import field_loss, flat_sigmoid, bce_from_predictions
from .train import train_field, save_field, load_field, make_color_views_fn
