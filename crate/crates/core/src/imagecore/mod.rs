//! Image tensors, masks, raster I/O, and the two smoothness losses.

mod combo;
mod io;
mod resample;
mod smooth;
mod tensor;

pub use combo::compose_combo;
pub use io::{
    load_image, load_mask, load_threshold_grid, load_threshold_image, parse_threshold_grid,
    save_image, save_mask,
};
pub use resample::{downsample_box, gaussian_blur, sample_bilinear, upsample_nearest};
pub use smooth::{
    masked_smoothness, masked_smoothness_grad, tv_loss, tv_loss_grad, SmoothnessKind,
    SmoothnessSpec,
};
pub use tensor::{BinaryMask, ImageTensor, ThresholdMatrix};
