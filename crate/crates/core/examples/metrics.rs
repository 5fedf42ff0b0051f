//! External validity measures on small hand-made partitions.

use diestudy::metrics::{fmi_from, MetricsReport};
use diestudy::Partition;

fn main() {
    let truth = Partition::from_labels(&["a", "a", "a", "b", "b", "c", "d"]);
    let cases = [
        ("exact", Partition::from_labels(&[0, 0, 0, 1, 1, 2, 3])),
        ("merged singletons", Partition::from_labels(&[0, 0, 0, 1, 1, 2, 2])),
        ("split die", Partition::from_labels(&[0, 0, 4, 1, 1, 2, 3])),
        ("all singletons", Partition::singletons(7)),
    ];
    for (name, pred) in &cases {
        let r = MetricsReport::compute(&truth, pred).expect("same length");
        println!(
            "{name:>18}: AMI {:.3}  ARI {:.3}  FMI {:.3}  P {:.3}  R {:.3}",
            r.ami, r.ari, r.fmi, r.precision, r.recall
        );
    }
    // FMI is the geometric mean of pairwise precision and recall
    println!("fmi(0.674, 0.329) = {:.3}", fmi_from(0.674, 0.329));
    println!("fmi(0.914, 0.540) = {:.3}", fmi_from(0.914, 0.540));
}
