//! Square-lattice indexing shared by the city topology and the percolation
//! engine. Keeping the bond numbering in one place means street ids and bond
//! ids are the same thing by construction.

/// An `side x side` grid of nodes with open boundaries. Bonds connect
/// horizontally or vertically adjacent nodes.
///
/// Bond numbering: all horizontal bonds in row-major order first
/// (`row * (side-1) + col`), then all vertical bonds row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridLattice {
    side: usize,
}

impl GridLattice {
    /// Panics if `side < 2`; a lattice without bonds is never meaningful here.
    pub fn new(side: usize) -> Self {
        assert!(side >= 2, "lattice side must be at least 2");
        Self { side }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn num_nodes(&self) -> usize {
        self.side * self.side
    }

    pub fn num_bonds(&self) -> usize {
        2 * self.side * (self.side - 1)
    }

    pub fn node(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.side && col < self.side);
        row * self.side + col
    }

    pub fn node_coords(&self, node: usize) -> (usize, usize) {
        (node / self.side, node % self.side)
    }

    /// Endpoints of a bond, lower node id first.
    pub fn bond_endpoints(&self, bond: usize) -> (usize, usize) {
        let horizontal = self.side * (self.side - 1);
        if bond < horizontal {
            let row = bond / (self.side - 1);
            let col = bond % (self.side - 1);
            (self.node(row, col), self.node(row, col + 1))
        } else {
            let v = bond - horizontal;
            let row = v / self.side;
            let col = v % self.side;
            (self.node(row, col), self.node(row + 1, col))
        }
    }

    /// True if the node lies on the outer boundary of the grid.
    pub fn is_boundary(&self, node: usize) -> bool {
        let (r, c) = self.node_coords(node);
        r == 0 || c == 0 || r == self.side - 1 || c == self.side - 1
    }

    /// Bonds incident to a node.
    pub fn incident_bonds(&self, node: usize) -> Vec<usize> {
        let (r, c) = self.node_coords(node);
        let horizontal = self.side * (self.side - 1);
        let mut out = Vec::with_capacity(4);
        if c > 0 {
            out.push(r * (self.side - 1) + c - 1);
        }
        if c + 1 < self.side {
            out.push(r * (self.side - 1) + c);
        }
        if r > 0 {
            out.push(horizontal + (r - 1) * self.side + c);
        }
        if r + 1 < self.side {
            out.push(horizontal + r * self.side + c);
        }
        out
    }
}
