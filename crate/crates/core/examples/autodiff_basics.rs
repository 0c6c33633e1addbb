//! Builds a tiny graph, runs backward, and compares one gradient against a
//! central difference.

use modgate::autodiff::{Tensor, Value};

fn f(w: &Value, x: &Value) -> modgate::Result<Value> {
    Ok(w.matmul(x)?.relu().sum().add_scalar(1.0))
}

fn main() -> modgate::Result<()> {
    let w = Value::param(Tensor::new(&[2, 3], vec![0.5, -1.0, 2.0, 1.5, 0.3, -0.7])?);
    let x = Value::constant(Tensor::new(&[3, 1], vec![1.0, 2.0, 3.0])?);
    let y = f(&w, &x)?;
    y.backward()?;
    println!("y = {}", y.item());
    println!("dy/dw = {:?}", w.grad().data());

    let h = 1e-6;
    let w0 = w.data().data()[0];
    w.data_mut().data_mut()[0] = w0 + h;
    let up = f(&w, &x)?.item();
    w.data_mut().data_mut()[0] = w0 - h;
    let down = f(&w, &x)?.item();
    w.data_mut().data_mut()[0] = w0;
    println!("finite difference for w[0,0] = {:.6}", (up - down) / (2.0 * h));
    Ok(())
}
