# ALU safety toolkit modules
