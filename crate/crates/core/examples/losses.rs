//! Soft Dice, soft cross-entropy, the similarity-alignment loss and their sum.
//!
//! cargo run --example losses

use sraseg::losses::{
    nn_min_distances, sa_loss, soft_cross_entropy, soft_dice_loss, soft_segmentation_loss, total_loss, DiceMode,
    LossConfig, Reduction,
};
use sraseg::{ClassMap, EmbeddingBatch};

fn main() -> sraseg::Result<()> {
    // One pixel, target class 0, prediction undecided.
    let p = vec![ClassMap::from_vec(2, 1, 1, vec![0.5, 0.5])?];
    let t = vec![ClassMap::from_vec(2, 1, 1, vec![1.0, 0.0])?];
    let ce = soft_cross_entropy(&p, &t, 1e-7, Reduction::Sum)?;
    let dice = soft_dice_loss(&p, &t, 1e-5, DiceMode::BatchGlobal)?;
    println!("cross-entropy {:.4} grad {:?}", ce.value, ce.grad[0].data);
    println!("dice {:.4} grad {:?}", dice.value, dice.grad[0].data);
    let soft = soft_segmentation_loss(&p, &t, &LossConfig::default())?;
    println!("soft loss {:.4}", soft.value);

    let syn = EmbeddingBatch::from_rows(&[vec![0.0, 0.0], vec![3.0, 3.0]])?;
    let real = EmbeddingBatch::from_rows(&[vec![1.0, 1.0], vec![3.0, 0.0]])?;
    let nn = nn_min_distances(&syn, &real)?;
    println!("nearest real rows {:?} at {:?}", nn.indices, nn.distances);
    let (sa, _) = sa_loss(&syn, &real)?;
    println!("alignment {:.4}, grad rows {:?}", sa.value, sa.grad.data);
    println!("total with lambda 0.1: {:.4}", total_loss(soft.value, sa.value, 0.1));
    Ok(())
}
