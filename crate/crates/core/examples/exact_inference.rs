//! Exact inference on a tiny network by enumerating every hidden and output
//! configuration: the posterior table, the likelihood of an example, its
//! Jensen lower bound and conditional marginals given a clamped output.
use stochnet::data::Example;
use stochnet::inference::{enumerate_posterior, ClampSet};
use stochnet::model::{Event, UnitKind};
use stochnet::oracle::{exact_log_likelihood, jensen_bound, random_net};

fn main() {
    let net = random_net(2, &[(UnitKind::Sigmoid, 3), (UnitKind::Sigmoid, 2)], 2.0, 11);
    let x = vec![1.0, -0.5];
    let table = enumerate_posterior(&net, &x).unwrap();
    println!("{} joint configurations, total mass {:.12}", table.entries.len(), table.total());
    println!("output marginals {:.4?}", table.output_marginals());

    let ex = Example { x: x.clone(), y: vec![1.0, 0.0] };
    let ll = exact_log_likelihood(&net, &ex).unwrap();
    let bound = jensen_bound(&net, &ex).unwrap();
    println!("log p(y|x) = {ll:.6}   Jensen bound = {bound:.6}   slack {:.6}", ll - bound);

    let mut clamp = ClampSet::new(2);
    clamp.set(0, Event::Bits(1));
    println!("p(y | x, y0 = 1) = {:.4?}", table.conditional_output_marginals(&clamp).unwrap());
    println!("p(z | x, y0 = 1) = {:.4?}", table.conditional_hidden_marginals(&clamp).unwrap());
}
