fn main() {
    fedflex::init_threading();
}
