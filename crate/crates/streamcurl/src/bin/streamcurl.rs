fn main() {
    println!("streamcurl");
}
