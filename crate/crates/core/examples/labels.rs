//! Ulam-Harris labels and populations as labelled point measures.
//!
//! ```bash
//! cargo run --example labels
//! ```

use spinal::yule::labels;
use spinal::{Label, Population, TraitPoint};

fn main() -> spinal::Result<()> {
    let u = Label::new(&[2, 1]);
    let v = u.child(3);
    println!("{u} is an ancestor of {v}: {}", u.is_ancestor_of(&v));
    println!("parent of {v}: {}", v.parent().expect("non-root"));
    println!("{u} · {v} = {}", u.concat(&v));

    let mut pop = Population::from_scalars(0.0, &[1.0, 2.0]);
    pop.branch(0, vec![TraitPoint::scalar(0.4), TraitPoint::scalar(0.6)]);
    for (label, x) in pop.members() {
        println!("  {label:<6} {}", x.value());
    }
    println!("⟨ν, id⟩ = {}", pop.marginal().total_mass());

    // Division indices of a tree grown from two ancestors: 1 splits, then
    // the fourth individual in creation order, then the second.
    let alive = labels(&[1, 2, 2], 2)?;
    println!("labels alive: {}", alive.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" "));
    Ok(())
}
